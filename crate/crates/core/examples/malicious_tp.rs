//! A dishonest third party forging its announcements (or, for the entangled
//! protocol, the states it distributes).

use laqkd::adversary::AnnouncePolicy;
use laqkd::cli::{aggregate, run_trials, AdversarySpec, ScenarioConfig};
use laqkd::qstate::BellOutcome;
use laqkd::Protocol;

fn main() {
    let policies = [
        AnnouncePolicy::Truthful,
        AnnouncePolicy::UniformRandom,
        AnnouncePolicy::FlipWithinPair,
        AnnouncePolicy::Constant(BellOutcome::PhiPlus),
        AnnouncePolicy::Drop,
    ];
    for protocol in Protocol::ALL {
        for policy in policies {
            let config = ScenarioConfig::new(protocol, 128, 64, 2000, 9)
                .with_adversary(AdversarySpec::Tp(policy));
            let agg = aggregate(&config, &run_trials(&config).expect("trials"));
            println!(
                "{protocol} tp-{policy:<14} abort {:.4}  disturbance {:.4}",
                agg.abort_rate, agg.decode_error_rate
            );
        }
    }
}
