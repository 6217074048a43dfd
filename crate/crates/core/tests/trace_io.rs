use std::path::PathBuf;

use ific::baselines::ControllerKind;
use ific::config::RunConfig;
use ific::scenarios::run_with;
use ific::trace::{read_sidecar, read_trace, trace_hash, write_trace, TraceRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ific-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn random_record(rng: &mut ChaCha8Rng, k: usize) -> TraceRecord {
    let mut values: Vec<f64> = (0..TraceRecord::COLUMNS)
        .map(|_| {
            let mantissa: f64 = rng.random_range(-1.0..1.0);
            let exponent: i32 = rng.random_range(-300..300);
            mantissa * 10f64.powi(exponent)
        })
        .collect();
    values[0] = k as f64 * 1e-3;
    let mut rec = TraceRecord::from_values(&values);
    rec.lambda_c = k.is_multiple_of(3);
    rec.guidance = k.is_multiple_of(5);
    rec.human_active = k.is_multiple_of(7);
    rec
}

#[test]
fn hundred_thousand_rows_round_trip_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut records: Vec<_> = (0..100_000).map(|k| random_record(&mut rng, k)).collect();
    records[1].f_ext = [f64::MIN_POSITIVE, -0.0, f64::MAX, f64::EPSILON, 5e-324, -1.0 / 3.0];

    let path = scratch("round_trip.csv");
    let meta = serde_json::json!({ "controller": "ific", "seed": 7 });
    write_trace(&path, &records, Some(&meta)).unwrap();
    let back = read_trace(&path).unwrap();

    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        let (va, vb) = (a.values(), b.values());
        assert!(va.iter().zip(&vb).all(|(x, y)| x.to_bits() == y.to_bits()), "row at t = {}", a.t);
    }
    assert_eq!(trace_hash(&records), trace_hash(&back));
    assert_eq!(read_sidecar(&path).unwrap(), meta);
    std::fs::remove_file(&path).ok();
}

#[test]
fn header_mismatch_is_reported() {
    let path = scratch("bad_header.csv");
    let mut header = TraceRecord::header();
    header[3] = "bogus".into();
    let row = vec!["0.0"; header.len()].join(",");
    std::fs::write(&path, format!("{}\n{row}\n", header.join(","))).unwrap();
    let err = read_trace(&path).unwrap_err().to_string();
    assert!(err.contains("bogus"), "{err}");
    std::fs::remove_file(&path).ok();
}

#[test]
fn malformed_row_is_reported() {
    let path = scratch("bad_row.csv");
    let header = TraceRecord::header();
    let mut row = vec!["1.0".to_string(); header.len()];
    row[5] = "abc".into();
    std::fs::write(&path, format!("{}\n{}\n", header.join(","), row.join(","))).unwrap();
    assert!(read_trace(&path).is_err());
    std::fs::remove_file(&path).ok();
}

#[test]
fn identical_configs_give_identical_hashes() {
    let mut config = RunConfig::default();
    config.duration = 2.0;
    config.noise.enabled = true;
    config.seed = 42;
    for kind in ControllerKind::ALL {
        let a = run_with(&config, kind).unwrap();
        let b = run_with(&config, kind).unwrap();
        assert_eq!(trace_hash(&a.records), trace_hash(&b.records), "{kind}");
    }
    let c = run_with(&config, ControllerKind::Ific).unwrap();
    config.seed = 43;
    let d = run_with(&config, ControllerKind::Ific).unwrap();
    assert_ne!(trace_hash(&c.records), trace_hash(&d.records));
}
