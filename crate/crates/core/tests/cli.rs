use std::path::Path;
use std::process::{Command, Output};

use laqkd::cli::{cmd_verify_tables, CliError, EXIT_VERIFY};
use laqkd::keymat::{write_key_file, KeyEncoding, KeyFileHeader, MasterKeyStore};
use laqkd::protocols::{p1_decode_m, verify_tables_with, Decoders};
use laqkd::Protocol;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn laqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laqkd"))
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn has_keys(v: &Value, keys: &[&str]) {
    for k in keys {
        assert!(v.get(k).is_some(), "missing `{k}` in {v}");
    }
}

#[test]
fn verify_tables_exits_zero() {
    let out = laqkd(&["verify-tables"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verified 8+4+16 rows: all match"));
    assert!(text.contains("support={phi+,phi-}"));
    let out = laqkd(&["verify-tables", "--json"]);
    assert_eq!(json(&out)["rows"].as_array().unwrap().len(), 28);
}

#[test]
fn inverted_decoder_fails_naming_row() {
    let decoders = Decoders {
        p1: |k, o| 1 - p1_decode_m(k, o),
        ..Decoders::default()
    };
    let mut sink = Vec::new();
    let err = cmd_verify_tables(&verify_tables_with(&decoders), false, &mut sink).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VERIFY);
    let CliError::Verification(msg) = err else {
        panic!("wrong error")
    };
    assert!(msg.contains("table1 k1=0 r=0,0"), "{msg}");
}

#[test]
fn run_reports_rates() {
    let out = laqkd(&[
        "run",
        "--protocol",
        "p1",
        "--n",
        "32",
        "--m",
        "16",
        "--trials",
        "100",
        "--seed",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    has_keys(&v, &["success_rate", "abort_rate", "key_agreement_rate"]);
    assert_eq!(v["success_rate"], 1.0);
    assert_eq!(v["key_agreement_rate"], 1.0);

    let out = laqkd(&[
        "run",
        "--n",
        "128",
        "--m",
        "64",
        "--trials",
        "1000",
        "--adversary",
        "intercept-z",
    ]);
    assert!(json(&out)["abort_rate"].as_f64().unwrap() >= 0.999);
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        &["run", "--trials", "0"][..],
        &["run", "--adversary", "intercept-y"],
        &["attack", "--adversary", "warp-drive"],
        &["run", "--n", "0"],
        &["run", "--nprime", "500"],
        &["metrics", "--m", "0"],
        &["frobnicate"],
        &["run", "--protocol", "p9"],
        &["run", "--config", "/nonexistent/config.json"],
    ] {
        let out = laqkd(args);
        assert_eq!(out.status.code(), Some(64), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(laqkd(&["--help"]).status.code(), Some(0));
}

#[test]
fn depleted_backup_exits_65() {
    let out = laqkd(&[
        "run",
        "--l",
        "0",
        "--trials",
        "3",
        "--adversary",
        "tp-random",
    ]);
    assert_eq!(out.status.code(), Some(65));
}

#[test]
fn shared_key_file_runs_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("keys.txt");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let store = MasterKeyStore::generate(Protocol::P1, 32, 16, 20, &mut rng);
    let header = KeyFileHeader {
        protocol: Protocol::P1,
        n: 32,
        m: 16,
        l: 20,
        encoding: KeyEncoding::Hex,
    };
    write_key_file(&store, &header, std::fs::File::create(&path).unwrap()).unwrap();
    let keys = path.to_str().unwrap();
    // each abort discards ceil(0.33 * 16) = 6 bits, so the fourth one fails
    let base = [
        "run",
        "--n",
        "32",
        "--m",
        "16",
        "--adversary",
        "tp-random",
        "--keys",
        keys,
    ];
    let ok = laqkd(&[&base[..], &["--trials", "3"]].concat());
    assert_eq!(ok.status.code(), Some(0));
    let depleted = laqkd(&[&base[..], &["--trials", "4"]].concat());
    assert_eq!(depleted.status.code(), Some(65));
    let wrong = laqkd(&["run", "--n", "64", "--m", "16", "--keys", keys]);
    assert_eq!(wrong.status.code(), Some(64));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    std::fs::write(
        &cfg,
        r#"{"protocol":"p2","n":64,"m":16,"trials":20,"seed":9,"adversary":"tp-random"}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let v = json(&laqkd(&["run", "--config", c]));
    assert_eq!(v["protocol"], "p2");
    assert_eq!(v["abort_rate"], 1.0);
    let v = json(&laqkd(&[
        "run",
        "--config",
        c,
        "--adversary",
        "passive",
        "--protocol",
        "p3",
    ]));
    assert_eq!(v["protocol"], "p3");
    assert_eq!(v["success_rate"], 1.0);
    std::fs::write(&cfg, r#"{"colour":"blue"}"#).unwrap();
    assert_eq!(laqkd(&["run", "--config", c]).status.code(), Some(64));
}

#[test]
fn metrics_outputs() {
    let out = laqkd(&[
        "metrics",
        "--protocol",
        "p3",
        "--n",
        "128",
        "--m",
        "64",
        "--l",
        "256",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let r = &v["reports"][0];
    assert_eq!(r["ttc"]["ttc"], 3);
    assert_eq!(r["qe"], "1/3");
    assert!((r["recycling"][0]["rate"].as_f64().unwrap() - 0.89).abs() < 1e-12);
    assert_eq!(v["references"].as_array().unwrap().len(), 3);

    let v = json(&laqkd(&["metrics", "--format", "json"]));
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports[1]["qe_value"], 0.5);
    let differing: Vec<&str> = [
        "qe",
        "psk_bits",
        "recycling",
        "ttc",
        "quantum_resource",
        "tp_capabilities",
        "participant_capabilities",
    ]
    .into_iter()
    .filter(|k| reports[0][k] != reports[2][k])
    .collect();
    assert_eq!(
        differing,
        ["ttc", "tp_capabilities", "participant_capabilities"]
    );

    let text = String::from_utf8(laqkd(&["metrics"]).stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("protocol"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn attack_reports() {
    let keys = [
        "strategy",
        "trials",
        "detection_rate",
        "per_position_disturbance",
        "mi_estimate",
        "residual",
    ];
    let v = json(&laqkd(&[
        "attack",
        "--adversary",
        "passive",
        "--trials",
        "50",
    ]));
    has_keys(&v, &keys);
    assert_eq!(v["detection_rate"], 0.0);
    assert_eq!(v["mi_estimate"], 0.0);

    let v = json(&laqkd(&[
        "attack",
        "--protocol",
        "p2",
        "--adversary",
        "probe-constrained",
        "--trials",
        "50",
    ]));
    has_keys(&v, &keys);
    assert!(v["mi_estimate"].as_f64().unwrap() < 0.01);
    assert_eq!(v["detection_rate"], 0.0);

    let v = json(&laqkd(&[
        "attack",
        "--adversary",
        "intercept-breidbart",
        "--trials",
        "300",
        "--seed",
        "2",
    ]));
    assert!((v["value_guess_accuracy"].as_f64().unwrap() - 0.854).abs() < 0.005);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = laqkd(&[
        "sweep",
        "--grid-protocols",
        "p1,p2",
        "--grid-n",
        "32,64",
        "--grid-m",
        "8",
        "--trials",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(&header[0], "protocol");
    assert!(header.iter().any(|h| h == "abort_rate"));
    assert_eq!(reader.records().count(), 4);
}

fn outputs_match(args: &[&str], file: Option<&Path>) {
    let a = laqkd(args);
    let fa = file.map(|f| std::fs::read(f).unwrap());
    let b = laqkd(args);
    let fb = file.map(|f| std::fs::read(f).unwrap());
    assert_eq!(a.status.code(), Some(0), "{args:?}");
    assert_eq!(a.stdout, b.stdout, "{args:?}");
    assert_eq!(fa, fb, "{args:?}");
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    outputs_match(
        &[
            "run",
            "--trials",
            "40",
            "--seed",
            "8",
            "--adversary",
            "intercept-random",
            "--full",
            "--out",
            o,
        ],
        Some(&out),
    );
    outputs_match(
        &[
            "run", "--trials", "40", "--seed", "8", "--jobs", "3", "--out", o,
        ],
        Some(&out),
    );
    outputs_match(
        &[
            "attack",
            "--protocol",
            "p3",
            "--adversary",
            "probe-random:2",
            "--trials",
            "20",
            "--out",
            o,
        ],
        Some(&out),
    );
    outputs_match(
        &["sweep", "--grid-n", "16,32", "--trials", "5", "--out", o],
        Some(&out),
    );
    outputs_match(&["verify-tables"], None);
    outputs_match(&["metrics", "--format", "json"], None);

    let one = laqkd(&[
        "run",
        "--trials",
        "30",
        "--seed",
        "5",
        "--jobs",
        "1",
        "--adversary",
        "tp-flip",
    ]);
    let many = laqkd(&[
        "run",
        "--trials",
        "30",
        "--seed",
        "5",
        "--jobs",
        "4",
        "--adversary",
        "tp-flip",
    ]);
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn transcripts_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let status = laqkd(&[
        "run",
        "--protocol",
        "p3",
        "--n",
        "8",
        "--m",
        "4",
        "--trials",
        "3",
        "--full",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3 * 13);
    let summaries: Vec<&Value> = lines.iter().filter(|l| l["type"] == "summary").collect();
    assert_eq!(summaries.len(), 3);
    for (i, s) in summaries.iter().enumerate() {
        assert_eq!(s["trial"], i);
        assert_eq!(s["outcome"], "success");
        assert_eq!(s["alice_key_sha256"], s["bob_key_sha256"]);
    }
}

#[test]
fn metrics_schedule_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("schedule.json");
    std::fs::write(
        &path,
        r#"[
            {"id":"qa","kind":"quantum","from":"alice","to":"tp"},
            {"id":"qb","kind":"quantum","from":"bob","to":"tp"},
            {"id":"ann","kind":"classical","from":"tp","to":"alice","deps":["qa","qb"]},
            {"id":"chk","kind":"classical","from":"alice","to":"bob","deps":["ann"]}
        ]"#,
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let v = json(&laqkd(&["metrics", "--schedule", p, "--format", "json"]));
    assert_eq!(v["ttc"], 3);
    assert_eq!(v["quantum_waves"], 1);
    assert_eq!(v["classical_waves"], 2);

    std::fs::write(
        &path,
        r#"[{"id":"x","kind":"classical","from":"a","to":"b","deps":["y"]},
            {"id":"y","kind":"classical","from":"b","to":"a","deps":["x"]}]"#,
    )
    .unwrap();
    assert_eq!(laqkd(&["metrics", "--schedule", p]).status.code(), Some(64));
}
