//! Valve-controlled dual-chamber energy tanks.
//!
//! Each tank stores `ᵀ𝓔 = z²/2`. The interactive chamber `ᴵ𝓔` is a
//! sub-account of that total: the valve moves energy from the upper part of
//! the tank into it at a limited rate, and positive interaction power drains
//! it. When either chamber runs low its damping factor grows towards `ε⁻¹`
//! and the controller attached to the tank is attenuated by the product of
//! both factors.

use serde::{Deserialize, Serialize};

use crate::error::TankError;

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_Z_MIN: f64 = 1e-2;

/// Lower limit `𝓔_l` and transition band `δ_s < δ_h` of one chamber, in J.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChamberThresholds {
    pub lower: f64,
    pub soft: f64,
    pub hard: f64,
}

impl ChamberThresholds {
    pub fn new(lower: f64, soft: f64, hard: f64) -> Result<Self, TankError> {
        if !(hard > soft && soft >= 0.0) {
            return Err(TankError::Thresholds { hard, soft });
        }
        Ok(Self { lower, soft, hard })
    }

    /// Thresholds placed at fractions of a chamber budget.
    pub fn fractions(budget: f64, lower: f64, soft: f64, hard: f64) -> Result<Self, TankError> {
        Self::new(lower * budget, soft * budget, hard * budget)
    }
}

/// Piecewise-cosine damping factor of a chamber holding `energy`.
///
/// Returns 1 above `𝓔_l + δ_h`, `ε⁻¹` below `𝓔_l + δ_s`, and
/// `1 / (cos((1 - 𝓐^p) π/2) + ε)` in between. The in-band value is floored at
/// 1: at the top of the band the cosine branch would otherwise dip to
/// `1/(1+ε)`, and a factor below one would amplify the controller.
pub fn chamber_damping(energy: f64, thresholds: &ChamberThresholds, epsilon: f64, p: f64) -> f64 {
    let ChamberThresholds { lower, soft, hard } = *thresholds;
    if energy > lower + hard {
        1.0
    } else if energy < lower + soft {
        1.0 / epsilon
    } else {
        let a = (energy - lower - soft) / (hard - soft);
        let d = 1.0 / ((((1.0 - a.powf(p)) * std::f64::consts::FRAC_PI_2).cos()) + epsilon);
        d.max(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chamber {
    Total,
    Interactive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankParams {
    /// Budget of the whole tank `ᵀ𝓔ᵘ` [J].
    pub total_upper: f64,
    /// Budget of the interactive chamber `ᴵ𝓔ᵘ` [J].
    pub inter_upper: f64,
    pub total: ChamberThresholds,
    pub inter: ChamberThresholds,
    /// Valve rate while interaction power is positive [W].
    pub valve_drain: f64,
    /// Time to reload an empty interactive chamber [s].
    pub t_load: f64,
    pub p_drain: f64,
    pub p_recover: f64,
    pub epsilon: f64,
    pub z_min: f64,
}

impl TankParams {
    /// Tank with the default threshold placement: total chamber band at
    /// 20–80 % of its budget, interactive band from 20 % up to the full budget.
    pub fn new(
        total_upper: f64,
        inter_upper: f64,
        valve_drain: f64,
        t_load: f64,
    ) -> Result<Self, TankError> {
        let params = Self {
            total_upper,
            inter_upper,
            total: ChamberThresholds::fractions(total_upper, 0.0, 0.2, 0.8)?,
            inter: ChamberThresholds::fractions(inter_upper, 0.0, 0.2, 1.0)?,
            valve_drain,
            t_load,
            p_drain: 1.0,
            p_recover: 10.0,
            epsilon: DEFAULT_EPSILON,
            z_min: DEFAULT_Z_MIN,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), TankError> {
        for (name, v) in [
            ("total_upper", self.total_upper),
            ("inter_upper", self.inter_upper),
            ("t_load", self.t_load),
            ("epsilon", self.epsilon),
            ("z_min", self.z_min),
            ("p_drain", self.p_drain),
            ("p_recover", self.p_recover),
        ] {
            if !(v > 0.0) {
                return Err(TankError::NonPositive(name));
            }
        }
        if !(self.valve_drain >= 0.0) {
            return Err(TankError::NonPositive("valve_drain"));
        }
        if self.inter_upper > self.total_upper {
            return Err(TankError::Budget {
                inter: self.inter_upper,
                total: self.total_upper,
            });
        }
        ChamberThresholds::new(self.total.lower, self.total.soft, self.total.hard)?;
        ChamberThresholds::new(self.inter.lower, self.inter.soft, self.inter.hard)?;
        Ok(())
    }

    /// Reload rate of the valve when no interaction drains the chamber.
    pub fn valve_charge(&self) -> f64 {
        self.inter_upper / self.t_load
    }

    pub fn energy_floor(&self) -> f64 {
        0.5 * self.z_min * self.z_min
    }

    pub fn thresholds(&self, chamber: Chamber) -> &ChamberThresholds {
        match chamber {
            Chamber::Total => &self.total,
            Chamber::Interactive => &self.inter,
        }
    }

    pub fn damping(&self, energy: f64, chamber: Chamber, drain_active: bool) -> f64 {
        let p = if drain_active { self.p_drain } else { self.p_recover };
        chamber_damping(energy, self.thresholds(chamber), self.epsilon, p)
    }

    /// Whether constrained-direction damping is engaged for a force tank whose
    /// interactive chamber holds `inter` J.
    pub fn constrained_damping_gate(&self, inter: f64) -> bool {
        inter < self.inter.lower + self.inter.hard
    }
}

/// Interaction power seen by a tank: the raw projected power decides the
/// valve state, the gain-weighted one (`ẋᵀK_p[D_w]F_ext`) is what drains.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InteractionFlow {
    pub raw: f64,
    pub weighted: f64,
}

impl InteractionFlow {
    pub fn is_positive(&self) -> bool {
        self.raw > 0.0
    }
}

/// Damping factors and gate in force for one control cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankGates {
    pub d_total: f64,
    pub d_inter: f64,
    pub lambda: bool,
}

impl TankGates {
    pub fn transparent() -> Self {
        Self {
            d_total: 1.0,
            d_inter: 1.0,
            lambda: false,
        }
    }

    pub fn product(&self) -> f64 {
        self.d_total * self.d_inter
    }
}

/// Energy bookkeeping of one integration step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TankFlow {
    /// Port power `𝓟` that drove the step [W].
    pub port_power: f64,
    /// Effective valve rate [W].
    pub valve: f64,
    /// Charge rejected at the budget ceiling [J].
    pub discarded: f64,
    /// Drain refused at the `z_min` floor [J].
    pub suppressed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTank {
    energy: f64,
    inter: f64,
}

impl EnergyTank {
    /// Both chambers at their budgets.
    pub fn full(params: &TankParams) -> Self {
        Self {
            energy: params.total_upper,
            inter: params.inter_upper,
        }
    }

    pub fn with_energies(params: &TankParams, total: f64, inter: f64) -> Self {
        let energy = total.clamp(params.energy_floor(), params.total_upper);
        Self {
            energy,
            inter: inter.clamp(0.0, params.inter_upper.min(energy)),
        }
    }

    /// Tank state `z`, with `ᵀ𝓔 = z²/2`.
    pub fn z(&self) -> f64 {
        (2.0 * self.energy).sqrt()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy
    }

    pub fn inter_energy(&self) -> f64 {
        self.inter
    }

    /// Gates for this cycle, evaluated on the energies before integration.
    /// A tank without an interactive port keeps `d_I = 1` and `λ = 1`.
    pub fn gates(&self, params: &TankParams, flow: InteractionFlow, interactive: bool) -> TankGates {
        let drain_active = flow.is_positive();
        let d_total = params.damping(self.energy, Chamber::Total, drain_active);
        if !interactive {
            return TankGates {
                d_total,
                d_inter: 1.0,
                lambda: true,
            };
        }
        TankGates {
            d_total,
            d_inter: params.damping(self.inter, Chamber::Interactive, drain_active),
            lambda: params.constrained_damping_gate(self.inter),
        }
    }

    /// Valve rate for the coming step, limited so the interactive chamber
    /// stays within its budget and within the total energy.
    pub fn valve_power(&self, params: &TankParams, flow: InteractionFlow, dt: f64) -> f64 {
        let drain = flow.weighted.max(0.0);
        if flow.is_positive() {
            let room = (params.inter_upper.min(self.energy) - self.inter) / dt + drain;
            params.valve_drain.min(room).max(0.0)
        } else {
            let room = (params.inter_upper.min(self.energy) - self.inter) / dt;
            params.valve_charge().min(room).max(0.0)
        }
    }

    /// Integrates `(d_T d_I) ż = 𝓟 / z` in its energy form together with the
    /// interactive chamber balance `ᴵ𝓔 += (P_V - λ_P k_p P) dt`.
    pub fn integrate(
        &mut self,
        params: &TankParams,
        gates: &TankGates,
        port_power: f64,
        flow: InteractionFlow,
        interactive: bool,
        dt: f64,
    ) -> TankFlow {
        let mut out = TankFlow {
            port_power,
            ..Default::default()
        };

        let mut energy = self.energy + port_power * dt / gates.product();
        if energy > params.total_upper {
            out.discarded = energy - params.total_upper;
            energy = params.total_upper;
        }
        let floor = params.energy_floor();
        if energy < floor {
            out.suppressed = floor - energy;
            log::debug!("tank at z_min: suppressed {:.3e} J of drain", out.suppressed);
            energy = floor;
        }

        let (valve, drain) = if interactive {
            let valve = self.valve_power(params, flow, dt);
            let drain = if flow.is_positive() { flow.weighted } else { 0.0 };
            (valve, drain)
        } else {
            (0.0, 0.0)
        };
        let inter = (self.inter + (valve - drain) * dt).clamp(0.0, params.inter_upper.min(energy));

        out.valve = valve;
        self.energy = energy;
        self.inter = if interactive { inter } else { self.inter.min(energy) };
        out
    }
}

/// Instantaneous `ż = 𝓟 / ((d_T d_I) z)`.
pub fn tank_rate(z: f64, port_power: f64, gates: &TankGates) -> f64 {
    port_power / (gates.product() * z)
}

/// Power terms that feed the force tank.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForceTankTerms {
    /// `ẋᵀF^r_f`
    pub regulation: f64,
    /// `ẋᵀD_d<D_i>ẋ`
    pub constrained_damping: f64,
    /// `ẋᵀK_p[D_w]F_ext`
    pub interaction: f64,
}

impl ForceTankTerms {
    /// `𝓟_f = -ẋᵀF^r_f + λ_c ẋᵀD_d<D_i>ẋ - ẋᵀK_p[D_w]F_ext`
    pub fn port_power(&self, lambda: bool) -> f64 {
        let gated = if lambda { self.constrained_damping } else { 0.0 };
        -self.regulation + gated - self.interaction
    }
}

/// Power terms that feed the impedance tank.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImpedanceTankTerms {
    /// `ẋ_dᵀ(F'_f + F_ext)`
    pub task: f64,
    /// `x̃˙'ᵀD_d[D_i]x̃˙'`
    pub tracking_damping: f64,
}

impl ImpedanceTankTerms {
    pub fn port_power(&self) -> f64 {
        self.task + self.tracking_damping
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TankStep {
    pub gates: TankGates,
    pub flow: TankFlow,
}

/// One force-tank cycle: gates from the current energies, then integration of
/// `𝓟_f` with the constrained-damping gate `λ_c` those energies imply.
pub fn force_tank_step(
    tank: &mut EnergyTank,
    params: &TankParams,
    terms: &ForceTankTerms,
    constrained_power: f64,
    interactive: bool,
    dt: f64,
) -> TankStep {
    let flow = InteractionFlow {
        raw: constrained_power,
        weighted: terms.interaction,
    };
    let gates = tank.gates(params, flow, interactive);
    let power = terms.port_power(gates.lambda);
    let flow = tank.integrate(params, &gates, power, flow, interactive, dt);
    TankStep { gates, flow }
}

/// One impedance-tank cycle; `unconstrained` carries `P_u` and
/// `ẋᵀK_p<D_w>F_ext`.
pub fn impedance_tank_step(
    tank: &mut EnergyTank,
    params: &TankParams,
    terms: &ImpedanceTankTerms,
    unconstrained: InteractionFlow,
    interactive: bool,
    dt: f64,
) -> TankStep {
    let gates = tank.gates(params, unconstrained, interactive);
    let flow = tank.integrate(params, &gates, terms.port_power(), unconstrained, interactive, dt);
    TankStep { gates, flow }
}
