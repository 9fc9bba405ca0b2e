//! Intercept-resend with each basis policy against every protocol.

use laqkd::adversary::BasisPolicy;
use laqkd::cli::{aggregate, run_trials, AdversarySpec, ScenarioConfig};
use laqkd::qstate::Qubit;
use laqkd::Protocol;

fn main() {
    let policies = [
        BasisPolicy::Z,
        BasisPolicy::X,
        BasisPolicy::Random,
        BasisPolicy::Breidbart,
    ];
    println!(
        "{:<4} {:<10} {:>8} {:>11} {:>9}",
        "prot", "basis", "abort", "disturbance", "guess"
    );
    for protocol in Protocol::ALL {
        for policy in policies {
            let config = ScenarioConfig::new(protocol, 128, 64, 500, 1)
                .with_adversary(AdversarySpec::Intercept(policy));
            let results = run_trials(&config).expect("trials");
            let agg = aggregate(&config, &results);
            let (mut hits, mut total) = (0usize, 0usize);
            for r in &results {
                for i in &r.record.intercepted {
                    let pos = &r.transcript.positions[i.position];
                    let truth = if i.qubit == Some(Qubit::B) {
                        pos.b_bit
                    } else {
                        pos.a_bit
                    };
                    hits += usize::from(truth == i.outcome);
                    total += 1;
                }
            }
            println!(
                "{:<4} {:<10} {:>8.4} {:>11.4} {:>9.4}",
                protocol.to_string(),
                policy.to_string(),
                agg.abort_rate,
                agg.decode_error_rate,
                hits as f64 / total as f64
            );
        }
    }
}
