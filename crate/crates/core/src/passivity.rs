//! Storage function, port power balance and the passivity audit of traces.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::controller::{Setpoint, TankEnergies};
use crate::plant::PlantState;
use crate::trace::TraceRecord;

/// Inertia and stiffness entering the storage function.
#[derive(Clone, Debug, PartialEq)]
pub struct StorageModel {
    pub inertia: Matrix6<f64>,
    pub stiffness: Matrix6<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StorageBreakdown {
    pub kinetic: f64,
    pub elastic: f64,
    pub tank_force: f64,
    pub tank_impedance: f64,
    pub total: f64,
}

fn storage_parts(
    pose_error: &Vector6<f64>,
    rate_error: &Vector6<f64>,
    tanks: &TankEnergies,
    model: &StorageModel,
) -> StorageBreakdown {
    // p̃ = Λx̃˙', so ½p̃ᵀΛ⁻¹p̃ reduces to ½x̃˙'ᵀΛx̃˙'
    let kinetic = 0.5 * rate_error.dot(&(model.inertia * rate_error));
    let elastic = 0.5 * pose_error.dot(&(model.stiffness * pose_error));
    let tank_force = tanks.force_total;
    let tank_impedance = tanks.impedance_total;
    StorageBreakdown {
        kinetic,
        elastic,
        tank_force,
        tank_impedance,
        total: kinetic + elastic + tank_force + tank_impedance,
    }
}

/// `V = ½x̃˙'ᵀΛx̃˙' + ½x̃'ᵀK_s x̃' + ½z_f² + ½z_i²` about the modified setpoint.
pub fn storage_value(
    state: &PlantState,
    setpoint: &Setpoint,
    tanks: &TankEnergies,
    model: &StorageModel,
) -> StorageBreakdown {
    let pose_error = state.pose() - setpoint.pose;
    let rate_error = state.twist.0 - setpoint.tracked.0;
    storage_parts(&pose_error, &rate_error, tanks, model)
}

/// Storage recomputed from the signals of a trace row.
pub fn record_storage(rec: &TraceRecord, model: &StorageModel) -> StorageBreakdown {
    let pose_error = Vector6::from(rec.pose) - Vector6::from(rec.setpoint);
    let rate_error = Vector6::from(rec.twist) - Vector6::from(rec.tracked_twist);
    let tanks = TankEnergies {
        force_total: rec.e_f,
        force_inter: rec.ei_f,
        impedance_total: rec.e_i,
        impedance_inter: rec.ei_i,
    };
    storage_parts(&pose_error, &rate_error, &tanks, model)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceCheck {
    /// `|x̃˙ᵀu₁ + ẋᵀu₂ + ẋ_dᵀu₃ - ẋᵀF_ext|` [W]
    pub residual: f64,
    /// Residual divided by one plus the magnitudes of the summed terms.
    pub relative: f64,
    pub violated: bool,
}

/// Power balance of the interconnection, evaluated with the unattenuated
/// force law and the external wrench the controller observed.
pub fn port_power_balance(rec: &TraceRecord) -> BalanceCheck {
    let v = Vector6::from(rec.twist);
    let vd = Vector6::from(rec.desired_twist);
    let f_ext = Vector6::from(rec.f_meas);
    let f_f = Vector6::from(rec.f_f);
    let c_int = Vector6::from(rec.port_c_interaction);
    let reg = Vector6::from(rec.port_regulation);

    let u1 = f_ext + f_f;
    let u2 = -c_int - reg;
    let u3 = f_f + f_ext;
    let terms = [(v - vd).dot(&u1), v.dot(&u2), vd.dot(&u3)];
    let external = v.dot(&f_ext);
    let residual = (terms.iter().sum::<f64>() - external).abs();
    let scale = 1.0 + terms.iter().map(|x| x.abs()).sum::<f64>() + external.abs();
    BalanceCheck {
        residual,
        relative: residual / scale,
        violated: residual > 1e-6 * (1.0 + external.abs()),
    }
}

/// Dissipation rates of the implemented loop [W]; both are non-positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    /// `λ_c (d_fT⁻¹d_fI⁻¹ - 1) ẋᵀD_d<D_i>ẋ`
    pub constrained: f64,
    /// `(d_iT⁻¹d_iI⁻¹ - 1) x̃˙'ᵀD_d[D_i]x̃˙'`
    pub unconstrained: f64,
}

pub fn record_dissipation(rec: &TraceRecord) -> Dissipation {
    let lambda = if rec.lambda_c { 1.0 } else { 0.0 };
    Dissipation {
        constrained: lambda * (1.0 / (rec.d_ft * rec.d_fi) - 1.0) * rec.damping_c,
        unconstrained: (1.0 / (rec.d_it * rec.d_ii) - 1.0) * rec.damping_u,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTolerance {
    /// Constant slack [J].
    pub absolute: f64,
    /// Slack growth [J/s].
    pub rate: f64,
    /// Bound on the dissipation terms [W].
    pub dissipation: f64,
}

impl Default for AuditTolerance {
    fn default() -> Self {
        Self {
            absolute: 1e-3,
            rate: 1e-4,
            dissipation: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Storage grew by more than the supplied work plus slack.
    Storage,
    /// A dissipation term came out positive.
    ConstrainedDissipation,
    UnconstrainedDissipation,
    /// The algebraic port balance failed.
    Balance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub cycle: usize,
    pub t: f64,
    pub kind: ViolationKind,
    /// Amount by which the bound was exceeded.
    pub excess: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub cycles: usize,
    pub max_balance_residual: f64,
    pub max_balance_relative: f64,
    /// `∫ẋᵀF_ext dt - (V(t) - V(0))` per cycle [J].
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub final_margin: f64,
    pub supplied_work: f64,
    /// Energy dissipated by the attenuated damping in each space [J].
    pub dissipated_constrained: f64,
    pub dissipated_unconstrained: f64,
    /// Charge rejected at tank ceilings [J].
    pub discarded: f64,
    /// Drain refused at the tank floors [J].
    pub suppressed: f64,
    pub violations: Vec<Violation>,
    pub first_violation: Option<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits a uniformly sampled trace against `V(t) - V(0) ≤ ∫ẋᵀF_ext dt + tol(t)`.
///
/// The supplied work holds each row's physical external wrench over the step
/// and pairs it with the twist that moved the plant, i.e. the next row's, as
/// the semi-implicit plant update does. Balance and dissipation checks run on
/// every row.
pub fn passivity_audit(
    records: &[TraceRecord],
    dt: f64,
    model: &StorageModel,
    tol: &AuditTolerance,
) -> AuditReport {
    let mut report = AuditReport {
        cycles: records.len(),
        min_margin: f64::INFINITY,
        ..Default::default()
    };
    let Some(first) = records.first() else {
        report.min_margin = 0.0;
        return report;
    };
    let v0 = record_storage(first, model).total;
    let t0 = first.t;

    let mut work = 0.0;
    let mut prev = first;
    for (cycle, rec) in records.iter().enumerate() {
        if cycle > 0 {
            work += Vector6::from(prev.f_ext).dot(&Vector6::from(rec.twist)) * dt;
            prev = rec;
        }
        let storage = record_storage(rec, model).total;
        let margin = work - (storage - v0);
        report.margins.push(margin);
        report.min_margin = report.min_margin.min(margin);

        let mut flag = |kind, excess| {
            let v = Violation {
                cycle,
                t: rec.t,
                kind,
                excess,
            };
            report.first_violation.get_or_insert(v);
            report.violations.push(v);
        };

        let slack = tol.absolute + tol.rate * (rec.t - t0);
        if margin < -slack {
            flag(ViolationKind::Storage, -margin - slack);
        }

        let balance = port_power_balance(rec);
        report.max_balance_residual = report.max_balance_residual.max(balance.residual);
        report.max_balance_relative = report.max_balance_relative.max(balance.relative);
        if balance.violated {
            flag(ViolationKind::Balance, balance.residual);
        }

        let dissipation = record_dissipation(rec);
        if dissipation.constrained > tol.dissipation {
            flag(ViolationKind::ConstrainedDissipation, dissipation.constrained);
        }
        if dissipation.unconstrained > tol.dissipation {
            flag(ViolationKind::UnconstrainedDissipation, dissipation.unconstrained);
        }
        report.dissipated_constrained -= dissipation.constrained * dt;
        report.dissipated_unconstrained -= dissipation.unconstrained * dt;
        report.discarded += rec.discarded;
        report.suppressed += rec.suppressed;
    }
    report.supplied_work = work;
    report.final_margin = *report.margins.last().unwrap_or(&0.0);
    report
}
