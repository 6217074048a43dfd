//! Cartesian rigid-body end-effector, penalty contact and scripted human input.

use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{PlantError, ScriptError};
use crate::geometry::{Twist, Wrench};

/// Cartesian inertia, Coriolis and gravity terms of the end-effector.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub inertia: Matrix6<f64>,
    pub coriolis: Matrix6<f64>,
    pub gravity: Wrench,
    inverse_inertia: Matrix6<f64>,
}

impl PlantModel {
    pub fn new(inertia: Matrix6<f64>) -> Result<Self, PlantError> {
        if (inertia - inertia.transpose()).abs().max() > 1e-12 {
            return Err(PlantError::InvalidInertia);
        }
        let chol = inertia.cholesky().ok_or(PlantError::InvalidInertia)?;
        Ok(Self {
            inertia,
            coriolis: Matrix6::zeros(),
            gravity: Wrench::zero(),
            inverse_inertia: chol.inverse(),
        })
    }

    /// Diagonal inertia with one translational mass and one rotational inertia.
    pub fn diagonal(mass: f64, rotational: f64) -> Result<Self, PlantError> {
        Self::new(Matrix6::from_diagonal(&Vector6::new(
            mass, mass, mass, rotational, rotational, rotational,
        )))
    }

    pub fn inverse_inertia(&self) -> &Matrix6<f64> {
        &self.inverse_inertia
    }
}

impl Default for PlantModel {
    fn default() -> Self {
        Self::diagonal(10.0, 1.0).expect("positive diagonal")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState {
    pub position: Vector3<f64>,
    /// Rotation vector of the end-effector orientation.
    pub orientation: Vector3<f64>,
    pub twist: Twist,
    pub time: f64,
}

impl PlantState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Default::default()
        }
    }

    /// Position followed by rotation vector.
    pub fn pose(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z,
        )
    }

    pub fn kinetic_energy(&self, model: &PlantModel) -> f64 {
        0.5 * self.twist.0.dot(&(model.inertia * self.twist.0))
    }
}

/// Semi-implicit Euler step of `Λẍ + μẋ + F_g = F_ctrl + F_ext`.
pub fn plant_step(
    state: &PlantState,
    model: &PlantModel,
    control: &Wrench,
    external: &Wrench,
    dt: f64,
) -> Result<PlantState, PlantError> {
    let net = control.0 + external.0 - model.coriolis * state.twist.0 - model.gravity.0;
    let accel = model.inverse_inertia * net;
    if !accel.iter().all(|a| a.is_finite()) {
        return Err(PlantError::Diverged { time: state.time });
    }
    let twist = Twist(state.twist.0 + accel * dt);
    let position = state.position + twist.linear() * dt;
    let delta = Rotation3::from_scaled_axis(twist.angular() * dt);
    let orientation = (delta * Rotation3::from_scaled_axis(state.orientation)).scaled_axis();
    Ok(PlantState {
        position,
        orientation,
        twist,
        time: state.time + dt,
    })
}

/// Penalty model of a horizontal surface below the end-effector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    pub surface_height: f64,
    /// Normal stiffness [N/m].
    pub stiffness: f64,
    /// Normal damping [N·s/m].
    pub damping: f64,
    /// Tangential viscous coefficient [N·s/m].
    pub viscous: f64,
    /// Coulomb coefficient.
    pub coulomb: f64,
    /// Friction smoothing velocity [m/s].
    pub slip_epsilon: f64,
}

impl EnvironmentModel {
    pub fn table() -> Self {
        Self {
            surface_height: 0.0,
            stiffness: 2.0e4,
            damping: 200.0,
            viscous: 0.05,
            coulomb: 0.001,
            slip_epsilon: 1e-3,
        }
    }

    pub fn phantom() -> Self {
        Self {
            surface_height: 0.0,
            stiffness: 1.5e3,
            damping: 50.0,
            viscous: 0.05,
            coulomb: 0.001,
            slip_epsilon: 1e-3,
        }
    }

    /// Human forearm under a probe.
    pub fn arm() -> Self {
        Self {
            surface_height: 0.0,
            stiffness: 2.5e3,
            damping: 60.0,
            viscous: 0.05,
            coulomb: 0.001,
            slip_epsilon: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [
            ("stiffness", self.stiffness),
            ("damping", self.damping),
            ("viscous", self.viscous),
            ("coulomb", self.coulomb),
        ] {
            if !(v >= 0.0) {
                return Err(PlantError::NegativeCoefficient(name));
            }
        }
        if !(self.slip_epsilon > 0.0) {
            return Err(PlantError::NegativeCoefficient("slip_epsilon"));
        }
        Ok(())
    }

    /// Reaction wrench for a surface displaced by `offset` and moving
    /// vertically at `rate`.
    pub fn wrench_with_motion(&self, state: &PlantState, offset: f64, rate: f64) -> Wrench {
        let penetration = self.surface_height + offset - state.position.z;
        if penetration <= 0.0 {
            return Wrench::zero();
        }
        let v = state.twist.linear();
        let normal = (self.stiffness * penetration - self.damping * (v.z - rate)).max(0.0);
        let slip = Vector3::new(v.x, v.y, 0.0);
        let coefficient = self.viscous + self.coulomb * normal / (slip.norm() + self.slip_epsilon);
        let tangential = -slip * coefficient;
        Wrench::new(Vector3::new(tangential.x, tangential.y, normal), Vector3::zeros())
    }
}

/// Contact wrench of a static surface.
pub fn environment_wrench(state: &PlantState, env: &EnvironmentModel) -> Wrench {
    env.wrench_with_motion(state, 0.0, 0.0)
}

/// What the virtual human does during one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Action {
    /// Half-sine force pulse along `direction` (normalized) reaching `peak`.
    Impulse { direction: [f64; 6], peak: f64 },
    /// Virtual-hand spring dragging the end-effector towards `target`.
    /// With `relative`, the target is an offset from where the end-effector
    /// was when the segment began. Only the selected `axes` are driven.
    SustainedGuidance {
        target: [f64; 3],
        #[serde(default)]
        relative: bool,
        #[serde(default = "all_axes")]
        axes: [bool; 3],
        #[serde(default = "default_hand_stiffness")]
        stiffness: f64,
        #[serde(default = "default_hand_force")]
        max_force: f64,
        #[serde(default)]
        ramp: f64,
    },
    /// Vertical pull of the end-effector by `height` above its start.
    Lift {
        height: f64,
        #[serde(default = "default_hand_stiffness")]
        stiffness: f64,
        #[serde(default = "default_hand_force")]
        max_force: f64,
        #[serde(default)]
        ramp: f64,
    },
    /// Hands off.
    Hold,
    /// The contact surface moves vertically by `rise` over the segment.
    ArmMotion { rise: f64 },
    /// A fixed wrench, as produced by replaying a live session.
    Constant { wrench: [f64; 6] },
}

fn all_axes() -> [bool; 3] {
    [true; 3]
}

fn default_hand_stiffness() -> f64 {
    2000.0
}

fn default_hand_force() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub action: Action,
}

impl Segment {
    fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }

    /// True for segments in which a person drags the robot.
    pub fn is_guidance(&self) -> bool {
        matches!(
            self.action,
            Action::SustainedGuidance { .. } | Action::Lift { .. }
        )
    }

    pub fn is_contact(&self) -> bool {
        matches!(
            self.action,
            Action::SustainedGuidance { .. }
                | Action::Lift { .. }
                | Action::Impulse { .. }
                | Action::Constant { .. }
        )
    }
}

/// Ordered, non-overlapping list of human actions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanScript {
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl HumanScript {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ScriptError> {
        let script = Self { segments };
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        let mut previous_end = f64::NEG_INFINITY;
        for (index, seg) in self.segments.iter().enumerate() {
            if !(seg.t_end > seg.t_start) || !seg.t_start.is_finite() || !seg.t_end.is_finite() {
                return Err(ScriptError::EmptySegment {
                    index,
                    t_start: seg.t_start,
                    t_end: seg.t_end,
                });
            }
            if seg.t_start < previous_end {
                return Err(ScriptError::Overlap { index });
            }
            previous_end = seg.t_end;
            let invalid = |reason: &str| ScriptError::Invalid {
                index,
                reason: reason.to_string(),
            };
            match &seg.action {
                Action::Impulse { direction, peak } => {
                    if Vector6::from(*direction).norm() == 0.0 {
                        return Err(invalid("impulse direction is zero"));
                    }
                    if !peak.is_finite() {
                        return Err(invalid("impulse peak must be finite"));
                    }
                }
                Action::SustainedGuidance {
                    stiffness,
                    max_force,
                    ramp,
                    ..
                }
                | Action::Lift {
                    stiffness,
                    max_force,
                    ramp,
                    ..
                } => {
                    if !(*stiffness > 0.0) || !(*max_force > 0.0) || !(*ramp >= 0.0) {
                        return Err(invalid(
                            "hand stiffness and force limit must be positive, ramp non-negative",
                        ));
                    }
                }
                Action::Constant { wrench } => {
                    if !wrench.iter().all(|v| v.is_finite()) {
                        return Err(invalid("constant wrench must be finite"));
                    }
                }
                Action::Hold | Action::ArmMotion { .. } => {}
            }
        }
        Ok(())
    }

    /// Repeats the segment list `count` times, each copy shifted by `period`.
    pub fn repeated(&self, count: usize, period: f64) -> Result<Self, ScriptError> {
        let mut segments = Vec::with_capacity(self.segments.len() * count);
        for k in 0..count {
            let shift = k as f64 * period;
            segments.extend(self.segments.iter().map(|s| Segment {
                t_start: s.t_start + shift,
                t_end: s.t_end + shift,
                action: s.action.clone(),
            }));
        }
        Self::new(segments)
    }

    pub fn active(&self, t: f64) -> Option<&Segment> {
        self.segments.iter().find(|s| s.contains(t))
    }

    pub fn guidance_active(&self, t: f64) -> bool {
        self.active(t).is_some_and(Segment::is_guidance)
    }

    /// Vertical displacement and rate of the contact surface at `t`.
    pub fn surface_motion(&self, t: f64) -> (f64, f64) {
        let mut offset = 0.0;
        let mut rate = 0.0;
        for seg in &self.segments {
            if let Action::ArmMotion { rise } = seg.action {
                let span = seg.t_end - seg.t_start;
                let s = ((t - seg.t_start) / span).clamp(0.0, 1.0);
                offset += rise * s;
                if seg.contains(t) {
                    rate += rise / span;
                }
            }
        }
        (offset, rate)
    }
}

/// Stateful evaluation of a [`HumanScript`]: relative targets are anchored at
/// the end-effector position observed when their segment first becomes active.
#[derive(Clone, Debug)]
pub struct Human {
    script: HumanScript,
    anchors: Vec<Option<Vector3<f64>>>,
}

impl Human {
    pub fn new(script: HumanScript) -> Self {
        let anchors = vec![None; script.segments.len()];
        Self { script, anchors }
    }

    pub fn script(&self) -> &HumanScript {
        &self.script
    }

    pub fn reset(&mut self) {
        self.anchors.iter_mut().for_each(|a| *a = None);
    }

    pub fn wrench(&mut self, state: &PlantState, t: f64) -> Wrench {
        let Some(index) = self.script.segments.iter().position(|s| s.contains(t)) else {
            return Wrench::zero();
        };
        let seg = &self.script.segments[index];
        let anchor = *self.anchors[index].get_or_insert(state.position);
        let elapsed = t - seg.t_start;
        match &seg.action {
            Action::Impulse { direction, peak } => {
                let dir = Vector6::from(*direction).normalize();
                let phase = std::f64::consts::PI * elapsed / (seg.t_end - seg.t_start);
                Wrench(dir * (peak * phase.sin()))
            }
            Action::SustainedGuidance {
                target,
                relative,
                axes,
                stiffness,
                max_force,
                ramp,
            } => {
                let goal = if *relative {
                    anchor + Vector3::from(*target)
                } else {
                    Vector3::from(*target)
                };
                let mask = Vector3::from(axes.map(|a| if a { 1.0 } else { 0.0 }));
                let start = anchor.component_mul(&mask) + state.position.component_mul(&mask.map(|m| 1.0 - m));
                let goal = goal.component_mul(&mask) + start.component_mul(&mask.map(|m| 1.0 - m));
                hand_spring(state, start, goal, elapsed, *ramp, *stiffness, *max_force, &mask)
            }
            Action::Lift {
                height,
                stiffness,
                max_force,
                ramp,
            } => {
                let mask = Vector3::z();
                let goal = anchor + Vector3::new(0.0, 0.0, *height);
                hand_spring(state, anchor, goal, elapsed, *ramp, *stiffness, *max_force, &mask)
            }
            Action::Constant { wrench } => Wrench::from_array(*wrench),
            Action::Hold | Action::ArmMotion { .. } => Wrench::zero(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn hand_spring(
    state: &PlantState,
    start: Vector3<f64>,
    goal: Vector3<f64>,
    elapsed: f64,
    ramp: f64,
    stiffness: f64,
    max_force: f64,
    mask: &Vector3<f64>,
) -> Wrench {
    let s = if ramp > 0.0 { (elapsed / ramp).min(1.0) } else { 1.0 };
    let target = start + (goal - start) * s;
    let mut force = (target - state.position).component_mul(mask) * stiffness;
    let magnitude = force.norm();
    if magnitude > max_force {
        force *= max_force / magnitude;
    }
    Wrench::new(force, Vector3::zeros())
}
