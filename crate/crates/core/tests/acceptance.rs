//! Acceptance criteria, one printed PASS/FAIL line each.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use laqkd::adversary::{
    check_probe_conditions, construct_constrained_probe, probe_leakage_experiment, AnnouncePolicy,
    BasisPolicy,
};
use laqkd::cli::{aggregate, run_trials, AdversarySpec, ScenarioConfig};
use laqkd::metrics::{
    breidbart_bound_oracle, bundled_schedule, psk_bits, qubit_efficiency, recycling_rate_p1,
    recycling_rate_p2, recycling_rate_p3, ttc,
};
use laqkd::protocols::{verify_tables, TableId};
use laqkd::qstate::{bell_measure, tensor, BellOutcome, PhotonState};
use laqkd::Protocol;
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.ok &= took < limit;
    out.detail = format!("{}; {:.2?} (limit {:?})", out.detail, took, limit);
    out
}

fn table_fidelity() -> Outcome {
    timed(Duration::from_secs(1), || {
        let r = verify_tables();
        let counts = (
            r.count(TableId::T1),
            r.count(TableId::T2),
            r.count(TableId::T3),
        );
        check(
            counts == (8, 4, 16) && r.all_ok(),
            format!(
                "{}+{}+{} rows, {} mismatches",
                counts.0,
                counts.1,
                counts.2,
                r.mismatches().count()
            ),
        )
    })
}

fn honest_completeness() -> Outcome {
    timed(Duration::from_secs(30), || {
        let mut ok = true;
        let mut parts = Vec::new();
        for p in Protocol::ALL {
            let config = ScenarioConfig::new(p, 128, 64, 1000, 2024);
            let results = run_trials(&config).expect("honest trials");
            let aborts = results
                .iter()
                .filter(|r| !r.transcript.outcome.is_success())
                .count();
            let agree = results
                .iter()
                .filter(|r| r.transcript.outcome.keys_agree())
                .count();
            ok &= aborts == 0 && agree == 1000;
            parts.push(format!("{p}: {aborts} aborts, {agree}/1000 equal keys"));
        }
        check(ok, parts.join(", "))
    })
}

fn born_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let pair = tensor(&PhotonState::zero(), &PhotonState::zero());
    let n = 100_000;
    let hits = (0..n)
        .filter(|_| bell_measure(&pair, &mut rng).0 == BellOutcome::PhiPlus)
        .count();
    let f = hits as f64 / n as f64;
    check(
        (f - 0.5).abs() <= 0.005,
        format!("Φ+ frequency {f:.5} over {n}"),
    )
}

fn detection_power() -> Outcome {
    let z = AdversarySpec::Intercept(BasisPolicy::Z);
    let config = ScenarioConfig::new(Protocol::P1, 128, 64, 10_000, 77).with_adversary(z);
    let results = run_trials(&config).expect("intercept trials");
    let positions: Vec<bool> = results
        .iter()
        .flat_map(|r| {
            r.transcript
                .positions
                .iter()
                .map(|p| p.is_error(Protocol::P1))
        })
        .take(100_000)
        .collect();
    let err = positions.iter().filter(|&&e| e).count() as f64 / positions.len() as f64;
    let abort = aggregate(&config, &results).abort_rate;
    check(
        (err - 0.25).abs() <= 0.01 && abort >= 0.999 && positions.len() == 100_000,
        format!(
            "per-position error {err:.4} over {} positions, abort rate {abort:.4} over 10^4 runs",
            positions.len()
        ),
    )
}

fn breidbart_bound() -> Outcome {
    let bound = breidbart_bound_oracle(36_000).expect("resolution");
    let policy = AdversarySpec::Intercept(BasisPolicy::Angle(bound.argmax));
    let config = ScenarioConfig::new(Protocol::P1, 128, 64, 261, 5).with_adversary(policy);
    let results = run_trials(&config).expect("intercept trials");
    let mut hits = 0usize;
    let mut total = 0usize;
    'outer: for r in &results {
        for i in &r.record.intercepted {
            if total == 100_000 {
                break 'outer;
            }
            let pos = &r.transcript.positions[i.position];
            let truth = match i.qubit {
                Some(laqkd::qstate::Qubit::B) => pos.b_bit,
                _ => pos.a_bit,
            };
            hits += usize::from(truth == i.outcome);
            total += 1;
        }
    }
    let acc = hits as f64 / total as f64;
    check(
        (bound.max_probability - 0.8536).abs() <= 1e-4
            && (acc - 0.854).abs() <= 0.005
            && total == 100_000,
        format!(
            "oracle {:.6} at θ={:.5}, Monte-Carlo accuracy {acc:.4} over {total}",
            bound.max_probability, bound.argmax
        ),
    )
}

fn recycling_rates() -> Outcome {
    let p1 = recycling_rate_p1(128, 64).rate_f64();
    let p3 = recycling_rate_p3(128, 64).rate_f64();
    let k1 = recycling_rate_p2(256, 32).0;
    let k2 = recycling_rate_p2(128, 64).1;
    check(
        (p1 - 0.89).abs() <= 1e-4
            && (p3 - 0.89).abs() <= 1e-4
            && k1.rate == Ratio::new(9, 10)
            && k1.rate_f64() == 0.9
            && k2.rate == Ratio::from_integer(0),
        format!(
            "p1 {p1:.4}, p3 {p3:.4}, p2 K1(256,32) {}, p2 K2(128,64) {}",
            k1.rate, k2.rate
        ),
    )
}

fn metrics_table() -> Outcome {
    let mut ok = true;
    for (n, m, l) in [
        (128usize, 64usize, 256usize),
        (1, 1, 0),
        (100, 7, 3),
        (4096, 1024, 512),
    ] {
        let sym = Ratio::new(n as u64, 2 * (n + m) as u64);
        ok &= qubit_efficiency(Protocol::P1, n, m) == sym;
        ok &= qubit_efficiency(Protocol::P3, n, m) == sym;
        ok &= qubit_efficiency(Protocol::P2, n, m) == Ratio::new(1, 2);
        let base = (n + m + l) as u64;
        ok &= psk_bits(Protocol::P1, n, m, l) == base;
        ok &= psk_bits(Protocol::P2, n, m, l) == 2 * base;
        ok &= psk_bits(Protocol::P3, n, m, l) == base;
    }
    let ttcs: Vec<usize> = Protocol::ALL
        .iter()
        .map(|&p| ttc(&bundled_schedule(p)).expect("acyclic"))
        .collect();
    ok &= ttcs == [2, 2, 3];
    check(
        ok,
        format!("QE/PSK symbolic over 4 parameter sets, TTC {ttcs:?}"),
    )
}

fn collective_attacks() -> Outcome {
    timed(Duration::from_secs(300), || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ok = true;
        let mut parts = Vec::new();
        for p in Protocol::ALL {
            let (mut res, mut mi, mut td) = (0.0f64, 0.0f64, 0.0f64);
            for _ in 0..100 {
                let probe = construct_constrained_probe(p, &mut rng);
                let r = check_probe_conditions(&probe);
                res = res.max(r.residual);
                match probe_leakage_experiment(&probe, 100_000, &mut rng) {
                    Ok(l) => {
                        mi = mi.max(l.mi_estimate);
                        td = td.max(l.max_trace_distance);
                    }
                    Err(_) => ok = false,
                }
            }
            ok &= res < 1e-9 && mi < 0.01 && td < 1e-6;
            parts.push(format!("{p}: residual {res:.1e}, MI {mi:.1e}, TD {td:.1e}"));
        }
        check(ok, format!("100 probes each; worst {}", parts.join("; ")))
    })
}

fn forged_announcements() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in Protocol::ALL {
        let config = ScenarioConfig::new(p, 128, 64, 10_000, 13)
            .with_adversary(AdversarySpec::Tp(AnnouncePolicy::UniformRandom));
        let rate = aggregate(&config, &run_trials(&config).expect("tp trials")).abort_rate;
        ok &= rate >= 0.999;
        parts.push(format!("{p} {rate:.4}"));
    }
    check(
        ok,
        format!("abort rate over 10^4 runs: {}", parts.join(", ")),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("out");
    let o = out.to_str().expect("utf-8 path");
    let commands: [&[&str]; 5] = [
        &[
            "run",
            "--trials",
            "50",
            "--seed",
            "3",
            "--adversary",
            "intercept-random",
            "--full",
            "--out",
            o,
        ],
        &[
            "attack",
            "--protocol",
            "p3",
            "--adversary",
            "probe-constrained",
            "--trials",
            "20",
            "--out",
            o,
        ],
        &[
            "sweep",
            "--grid-protocols",
            "p1,p2,p3",
            "--grid-n",
            "16,32",
            "--trials",
            "5",
            "--out",
            o,
        ],
        &["verify-tables"],
        &["metrics", "--format", "json"],
    ];
    let mut ok = true;
    for args in commands {
        let capture = || {
            let run = Command::new(env!("CARGO_BIN_EXE_laqkd"))
                .args(args)
                .output()
                .expect("spawn");
            (run.status.code(), run.stdout, std::fs::read(&out).ok())
        };
        let a = capture();
        let b = capture();
        ok &= a.0 == Some(0) && a == b;
        let _ = std::fs::remove_file(&out);
    }
    check(
        ok,
        "run, attack, sweep, verify-tables, metrics repeated with equal seeds",
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("table fidelity", table_fidelity),
        ("honest completeness", honest_completeness),
        ("Born statistics", born_statistics),
        ("detection power", detection_power),
        ("Breidbart bound", breidbart_bound),
        ("recycling rates", recycling_rates),
        ("metrics table", metrics_table),
        ("collective-attack suite", collective_attacks),
        ("forged-announcement detection", forged_announcements),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let out = f();
        let tag = if out.ok { "PASS" } else { "FAIL" };
        writeln!(
            stdout,
            "acceptance {:>2} {tag} {name}: {}",
            i + 1,
            out.detail
        )
        .expect("stdout");
        if !out.ok {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
