//! Per-cycle trace records, CSV persistence and hashing.
//!
//! A trace row describes one control cycle: the plant state and tank energies
//! at the start of the cycle, and everything the controller computed from
//! them. Vector fields expand to six columns named `field_0` … `field_5`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::TraceError;

pub const SCHEMA_VERSION: u32 = 1;

macro_rules! trace_columns {
    ($( $(#[$doc:meta])* $field:ident : $kind:ident ),* $(,)?) => {
        #[derive(Clone, Debug, Default, PartialEq)]
        pub struct TraceRecord {
            $( $(#[$doc])* pub $field: trace_columns!(@ty $kind), )*
        }

        impl TraceRecord {
            pub const COLUMNS: usize = 0 $( + trace_columns!(@width $kind) )*;

            pub fn header() -> Vec<String> {
                let mut names = Vec::with_capacity(Self::COLUMNS);
                $( trace_columns!(@names names, $field, $kind); )*
                names
            }

            pub fn values(&self) -> Vec<f64> {
                let mut out = Vec::with_capacity(Self::COLUMNS);
                $( trace_columns!(@push out, self.$field, $kind); )*
                out
            }

            /// Inverse of [`TraceRecord::values`]; `values` must hold exactly
            /// [`TraceRecord::COLUMNS`] entries.
            pub fn from_values(values: &[f64]) -> Self {
                assert_eq!(values.len(), Self::COLUMNS, "trace row width");
                let mut it = values.iter().copied();
                Self { $( $field: trace_columns!(@take it, $kind), )* }
            }
        }
    };
    (@ty vec) => { [f64; 6] };
    (@ty num) => { f64 };
    (@ty flag) => { bool };
    (@width vec) => { 6 };
    (@width num) => { 1 };
    (@width flag) => { 1 };
    (@names $n:ident, $field:ident, vec) => {
        for i in 0..6 { $n.push(format!("{}_{}", stringify!($field), i)); }
    };
    (@names $n:ident, $field:ident, $other:ident) => { $n.push(stringify!($field).to_string()); };
    (@push $out:ident, $value:expr, vec) => { $out.extend_from_slice(&$value); };
    (@push $out:ident, $value:expr, num) => { $out.push($value); };
    (@push $out:ident, $value:expr, flag) => { $out.push(if $value { 1.0 } else { 0.0 }); };
    (@take $it:ident, vec) => {{
        let mut a = [0.0; 6];
        for v in a.iter_mut() { *v = $it.next().expect("width checked"); }
        a
    }};
    (@take $it:ident, num) => { $it.next().expect("width checked") };
    (@take $it:ident, flag) => { $it.next().expect("width checked") != 0.0 };
}

trace_columns! {
    t: num,
    pose: vec,
    twist: vec,
    /// Modified setpoint `x'_d`.
    setpoint: vec,
    /// `ẋ'_d`
    setpoint_twist: vec,
    /// Twist the rate error is measured against this cycle.
    tracked_twist: vec,
    /// `ẍ'_d`
    setpoint_accel: vec,
    /// Task velocity `ẋ_d` as seen by the controller.
    desired_twist: vec,
    /// Task wrench `F_d` in the world frame.
    task_force: vec,
    /// `F'_d`
    desired_force: vec,
    /// Physical external wrench (human plus environment).
    f_ext: vec,
    /// External wrench handed to the controller.
    f_meas: vec,
    f_human: vec,
    f_env: vec,
    f_f: vec,
    f_f_out: vec,
    f_imp: vec,
    port_c_interaction: vec,
    port_regulation: vec,
    port_u_interaction: vec,
    port_u_desired: vec,
    p_c: num,
    p_u: num,
    power_f: num,
    power_i: num,
    damping_c: num,
    damping_u: num,
    discarded: num,
    suppressed: num,
    e_f: num,
    ei_f: num,
    e_i: num,
    ei_i: num,
    d_ft: num,
    d_fi: num,
    d_it: num,
    d_ii: num,
    lambda_c: flag,
    v_kinetic: num,
    v_elastic: num,
    v_tank_f: num,
    v_tank_i: num,
    v_total: num,
    balance_residual: num,
    /// Script ground truth: a guidance segment is active.
    guidance: flag,
    /// Script ground truth: any human wrench is active.
    human_active: flag,
}

/// SHA-256 over the little-endian bytes of every value, row by row.
pub fn trace_hash(records: &[TraceRecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        for v in r.values() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Location of the JSON sidecar written next to a trace.
pub fn sidecar_path(trace: &Path) -> PathBuf {
    match trace.extension() {
        Some(ext) if ext != "json" => trace.with_extension("json"),
        _ => {
            let mut name = trace.as_os_str().to_owned();
            name.push(".meta.json");
            PathBuf::from(name)
        }
    }
}

/// Writes the CSV trace and, if given, its sidecar metadata.
pub fn write_trace(
    path: &Path,
    records: &[TraceRecord],
    sidecar: Option<&serde_json::Value>,
) -> Result<(), TraceError> {
    let file = BufWriter::new(File::create(path)?);
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(TraceRecord::header())?;
    let mut row: Vec<String> = Vec::with_capacity(TraceRecord::COLUMNS);
    for record in records {
        row.clear();
        // `{:?}` prints the shortest representation that parses back exactly
        row.extend(record.values().iter().map(|v| format!("{v:?}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;

    if let Some(meta) = sidecar {
        let mut out = BufWriter::new(File::create(sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut out, meta)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let expected = TraceRecord::header();
    let found = reader.headers()?.clone();
    for (index, name) in expected.iter().enumerate() {
        let got = found.get(index).unwrap_or("");
        if got != name {
            return Err(TraceError::Header {
                index,
                expected: name.clone(),
                found: got.to_string(),
            });
        }
    }
    if found.len() != expected.len() {
        return Err(TraceError::Header {
            index: expected.len(),
            expected: "<end of header>".into(),
            found: found.get(expected.len()).unwrap_or("").to_string(),
        });
    }

    let mut records = Vec::new();
    let mut values = Vec::with_capacity(TraceRecord::COLUMNS);
    for (row, result) in reader.records().enumerate() {
        let line = result?;
        values.clear();
        for field in line.iter() {
            let v = field.parse::<f64>().map_err(|e| TraceError::Row {
                row,
                reason: format!("`{field}`: {e}"),
            })?;
            values.push(v);
        }
        if values.len() != TraceRecord::COLUMNS {
            return Err(TraceError::Row {
                row,
                reason: format!("{} columns, expected {}", values.len(), TraceRecord::COLUMNS),
            });
        }
        records.push(TraceRecord::from_values(&values));
    }
    Ok(records)
}

pub fn read_sidecar(trace: &Path) -> Result<serde_json::Value, TraceError> {
    let file = BufReader::new(File::open(sidecar_path(trace))?);
    Ok(serde_json::from_reader(file)?)
}
