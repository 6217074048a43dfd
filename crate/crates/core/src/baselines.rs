//! Comparison controllers: UFIC, low-pass-filter gating and energy-ratio
//! switching. All of them drive the same unified law as IFIC.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::controller::{
    ControlContext, Controller, ControllerOutput, GainSet, OutputGates, Reference, TankEnergies,
    TankMode, UnifiedConfig, UnifiedController,
};
use crate::error::ControlError;
use crate::geometry::{interaction_powers, Twist, Wrench};
use crate::tanks::TankParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Ific,
    Ufic,
    Lpf,
    Ds,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::Ific, Self::Ufic, Self::Lpf, Self::Ds];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ific => "ific",
            Self::Ufic => "ufic",
            Self::Lpf => "lpf",
            Self::Ds => "ds",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ific" => Ok(Self::Ific),
            "ufic" => Ok(Self::Ufic),
            "lpf" => Ok(Self::Lpf),
            "ds" => Ok(Self::Ds),
            other => Err(format!("unknown controller `{other}` (expected ific, ufic, lpf or ds)")),
        }
    }
}

/// UFIC: the unified law with tanks on the controller ports only.
pub fn ufic(
    gains: GainSet,
    force_tank: TankParams,
    impedance_tank: TankParams,
) -> Result<UnifiedController, ControlError> {
    UnifiedController::new(UnifiedConfig {
        gains,
        force_tank,
        impedance_tank,
        mode: TankMode::ControllerOnly,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpfParams {
    /// Filter cutoff [Hz].
    pub cutoff: f64,
    /// Detection threshold on the filtered wrench [N].
    pub threshold: f64,
    /// Reactivation ramp [s].
    pub ramp: f64,
}

impl Default for LpfParams {
    fn default() -> Self {
        Self {
            cutoff: 20.0,
            threshold: 5.0,
            ramp: 0.5,
        }
    }
}

impl LpfParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.cutoff > 0.0 && self.threshold >= 0.0 && self.ramp > 0.0) {
            return Err(ControlError::Baseline(
                "lpf cutoff and ramp must be positive, threshold non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpfState {
    pub filtered: Wrench,
    /// Impedance gate driven by the unconstrained part of the filtered wrench.
    pub u_gate: f64,
    /// Force gate driven by the constrained part.
    pub c_gate: f64,
}

impl Default for LpfState {
    fn default() -> Self {
        Self {
            filtered: Wrench::zero(),
            u_gate: 1.0,
            c_gate: 1.0,
        }
    }
}

fn ramp_gate(gate: f64, detected: bool, dt: f64, ramp: f64) -> f64 {
    if detected {
        0.0
    } else {
        (gate + dt / ramp).min(1.0)
    }
}

/// Filters `F_ext` and updates both gates.
///
/// The constrained-space detector looks at the filtered force in excess of
/// the commanded contact force; steady contact at the set force therefore
/// keeps force control engaged, while the same wrench in free space does not.
pub fn lpf_update(
    state: &mut LpfState,
    params: &LpfParams,
    reference: &Reference,
    external: &Wrench,
    dt: f64,
) -> OutputGates {
    let tau = 1.0 / (2.0 * std::f64::consts::PI * params.cutoff);
    let alpha = dt / (dt + tau);
    state.filtered = state.filtered + (*external - state.filtered) * alpha;

    let basis = reference.force_basis();
    let u_norm = basis.project_kernel(&state.filtered.0).norm();
    let c_norm = basis.project_span(&state.filtered.0).norm();
    let contact = basis.project_span(&reference.force_world().0).norm();

    state.u_gate = ramp_gate(state.u_gate, u_norm > params.threshold, dt, params.ramp);
    state.c_gate = ramp_gate(
        state.c_gate,
        c_norm - contact > params.threshold,
        dt,
        params.ramp,
    );
    OutputGates {
        force: state.c_gate,
        impedance: state.u_gate,
    }
}

/// Low-pass-filter baseline: the tank-free unified law whose outputs are
/// multiplied by the detector gates.
#[derive(Clone, Debug)]
pub struct LpfController {
    inner: UnifiedController,
    params: LpfParams,
    state: LpfState,
}

impl LpfController {
    pub fn new(gains: GainSet, params: LpfParams) -> Result<Self, ControlError> {
        params.validate()?;
        let inner = UnifiedController::new(UnifiedConfig {
            gains,
            mode: TankMode::Pinned,
            ..UnifiedConfig::default()
        })?;
        Ok(Self {
            inner,
            params,
            state: LpfState::default(),
        })
    }

    pub fn state(&self) -> &LpfState {
        &self.state
    }
}

/// One LPF cycle.
pub fn lpf_step(
    ctx: &ControlContext,
    controller: &mut LpfController,
) -> Result<ControllerOutput, ControlError> {
    let gates = lpf_update(
        &mut controller.state,
        &controller.params,
        ctx.reference,
        &ctx.external,
        ctx.dt,
    );
    controller.inner.step_gated(ctx, gates)
}

impl Controller for LpfController {
    fn step(&mut self, ctx: &ControlContext) -> Result<ControllerOutput, ControlError> {
        lpf_step(ctx, self)
    }

    fn reset(&mut self) {
        self.inner.reset();
        self.state = LpfState::default();
    }

    fn name(&self) -> &'static str {
        "lpf"
    }

    fn tank_energies(&self) -> TankEnergies {
        self.inner.tank_energies()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsParams {
    /// Detection threshold `E_t` [J].
    pub e_t: f64,
    /// Energy at which the ratio saturates [J].
    pub e_m: f64,
    /// Forgetting time constant of the stored energy [s].
    pub leak: f64,
    /// Admittance mass [kg].
    pub mass: f64,
    /// Admittance damping [N·s/m].
    pub damping: f64,
}

impl Default for DsParams {
    fn default() -> Self {
        Self {
            e_t: 0.5,
            e_m: 2.0,
            leak: 2.0,
            mass: 5.0,
            damping: 50.0,
        }
    }
}

impl DsParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.e_m > self.e_t) {
            return Err(ControlError::Baseline(format!(
                "ds requires e_m > e_t (got e_m = {}, e_t = {})",
                self.e_m, self.e_t
            )));
        }
        if !(self.leak > 0.0 && self.mass > 0.0 && self.damping >= 0.0 && self.e_t >= 0.0) {
            return Err(ControlError::Baseline(
                "ds leak and mass must be positive, damping and e_t non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Switching ratio `h` for stored energy `e`.
    pub fn ratio(&self, e: f64) -> f64 {
        if e <= self.e_t {
            0.0
        } else {
            ((e - self.e_t) / (self.e_m - self.e_t)).min(1.0)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DsState {
    /// Energy stored from unconstrained interaction, drives `h_v`.
    pub e_v: f64,
    /// Energy stored from constrained interaction, drives `h_f`.
    pub e_f: f64,
    pub h_v: f64,
    pub h_f: f64,
    pub admittance: Twist,
}

/// Updates the stored energies and admittance, and returns the reference the
/// unified law should track.
pub fn ds_modulate(
    state: &mut DsState,
    params: &DsParams,
    ctx: &ControlContext,
) -> Reference {
    let dt = ctx.dt;
    let reference = ctx.reference;
    let basis_w = reference.force_basis();
    let powers = interaction_powers(&ctx.state.twist, &ctx.external, &basis_w);
    let decay = 1.0 / params.leak;
    state.e_v = (state.e_v + (powers.unconstrained.max(0.0) - decay * state.e_v) * dt).max(0.0);
    state.e_f = (state.e_f + (powers.constrained.max(0.0) - decay * state.e_f) * dt).max(0.0);

    let h_v_prev = state.h_v;
    state.h_v = params.ratio(state.e_v);
    state.h_f = params.ratio(state.e_f);

    let basis_i = reference.motion_basis();
    let drive = basis_i.span * ctx.external.0;
    let accel: Vector6<f64> = (drive - state.admittance.0 * params.damping) / params.mass;
    state.admittance = Twist(basis_i.span * (state.admittance.0 + accel * dt));

    let keep = 1.0 - state.h_v;
    let h_rate = (state.h_v - h_v_prev) / dt;
    let mut modulated = reference.clone();
    modulated.twist = reference.twist * keep + state.admittance;
    modulated.accel = reference.accel * keep + accel - reference.twist.0 * h_rate;
    modulated.force = reference.force * (1.0 - state.h_f);
    modulated
}

/// Energy-ratio baseline: tank-free unified law on a reference blended
/// between the task and an admittance driven by the external wrench.
#[derive(Clone, Debug)]
pub struct DsController {
    inner: UnifiedController,
    params: DsParams,
    state: DsState,
}

impl DsController {
    pub fn new(gains: GainSet, params: DsParams) -> Result<Self, ControlError> {
        params.validate()?;
        let inner = UnifiedController::new(UnifiedConfig {
            gains,
            mode: TankMode::Pinned,
            ..UnifiedConfig::default()
        })?;
        Ok(Self {
            inner,
            params,
            state: DsState::default(),
        })
    }

    pub fn state(&self) -> &DsState {
        &self.state
    }
}

/// One DS cycle.
pub fn ds_step(
    ctx: &ControlContext,
    controller: &mut DsController,
) -> Result<ControllerOutput, ControlError> {
    let reference = ds_modulate(&mut controller.state, &controller.params, ctx);
    let inner_ctx = ControlContext {
        reference: &reference,
        ..*ctx
    };
    controller.inner.step(&inner_ctx)
}

impl Controller for DsController {
    fn step(&mut self, ctx: &ControlContext) -> Result<ControllerOutput, ControlError> {
        ds_step(ctx, self)
    }

    fn reset(&mut self) {
        self.inner.reset();
        self.state = DsState::default();
    }

    fn name(&self) -> &'static str {
        "ds"
    }

    fn tank_energies(&self) -> TankEnergies {
        self.inner.tank_energies()
    }
}
