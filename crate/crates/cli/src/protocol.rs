//! JSON messages exchanged with live clients.

use ific::baselines::ControllerKind;
use ific::trace::TraceRecord;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest live force per axis [N].
pub const MAX_FORCE: f64 = 50.0;
/// Largest live moment per axis [N·m].
pub const MAX_MOMENT: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// External wrench addend, held until the next wrench message.
    Wrench { value: [f64; 6] },
    SetParam { key: String, value: f64 },
    Pause,
    Resume,
    Reset,
    SelectController {
        #[serde(alias = "value")]
        controller: ControllerKind,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(Box<Snapshot>),
    Error { message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error {
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Tanks {
    pub Ef: f64,
    pub EIf: f64,
    pub Ei: f64,
    pub EIi: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Powers {
    pub Pc: f64,
    pub Pu: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Forces {
    pub Fext: [f64; 6],
    pub Fpf: [f64; 6],
    pub Fimp: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub t: f64,
    pub controller: ControllerKind,
    pub paused: bool,
    pub pose: [f64; 6],
    pub twist: [f64; 6],
    pub tanks: Tanks,
    /// `[d_fT, d_fI, d_iT, d_iI]`
    pub damping: [f64; 4],
    pub powers: Powers,
    pub forces: Forces,
    pub lambda_c: bool,
}

impl Snapshot {
    pub fn from_record(rec: &TraceRecord, controller: ControllerKind, paused: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            t: rec.t,
            controller,
            paused,
            pose: rec.pose,
            twist: rec.twist,
            tanks: Tanks {
                Ef: rec.e_f,
                EIf: rec.ei_f,
                Ei: rec.e_i,
                EIi: rec.ei_i,
            },
            damping: [rec.d_ft, rec.d_fi, rec.d_it, rec.d_ii],
            powers: Powers {
                Pc: rec.p_c,
                Pu: rec.p_u,
            },
            forces: Forces {
                Fext: rec.f_ext,
                Fpf: rec.f_f_out,
                Fimp: rec.f_imp,
            },
            lambda_c: rec.lambda_c,
        }
    }
}

/// Parses and checks one client frame. Wrenches are clamped per axis to
/// `MAX_FORCE` / `MAX_MOMENT`.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, String> {
    let mut msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    match &mut msg {
        ClientMessage::Wrench { value } => {
            if value.iter().any(|v| !v.is_finite()) {
                return Err("wrench components must be finite".into());
            }
            for (i, v) in value.iter_mut().enumerate() {
                let limit = if i < 3 { MAX_FORCE } else { MAX_MOMENT };
                *v = v.clamp(-limit, limit);
            }
        }
        ClientMessage::SetParam { value, .. } if !value.is_finite() => {
            return Err("parameter value must be finite".into());
        }
        _ => {}
    }
    Ok(msg)
}
