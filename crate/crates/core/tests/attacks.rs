use laqkd::adversary::{AnnouncePolicy, BasisPolicy};
use laqkd::cli::{aggregate, run_trials, AdversarySpec, ScenarioConfig};
use laqkd::qstate::BellOutcome;
use laqkd::Protocol;

fn rates(p: Protocol, spec: AdversarySpec, trials: usize) -> laqkd::cli::RunAggregate {
    let config = ScenarioConfig::new(p, 64, 32, trials, 21).with_adversary(spec);
    aggregate(&config, &run_trials(&config).unwrap())
}

#[test]
fn truthful_tp_is_honest() {
    for p in Protocol::ALL {
        let agg = rates(p, AdversarySpec::Tp(AnnouncePolicy::Truthful), 50);
        assert_eq!(agg.success_rate, 1.0);
        assert_eq!(agg.key_agreement_rate, Some(1.0));
    }
}

#[test]
fn flipped_and_dropped_announcements_abort() {
    for p in Protocol::ALL {
        for policy in [
            AnnouncePolicy::FlipWithinPair,
            AnnouncePolicy::Drop,
            AnnouncePolicy::UniformRandom,
        ] {
            assert_eq!(
                rates(p, AdversarySpec::Tp(policy), 100).abort_rate,
                1.0,
                "{p} {policy}"
            );
        }
    }
}

// All-Φ⁺ decodes to M = 0 under either key bit, which passes the consistency
// check whatever R_A and R_B are; each side then takes its own R for the
// partner's and the keys silently differ.
#[test]
fn all_phi_plus_announcement_passes_check_with_mismatched_keys() {
    for p in [Protocol::P1, Protocol::P3] {
        let agg = rates(
            p,
            AdversarySpec::Tp(AnnouncePolicy::Constant(BellOutcome::PhiPlus)),
            100,
        );
        assert_eq!(agg.success_rate, 1.0);
        assert_eq!(agg.key_agreement_rate, Some(0.0));
    }
    let agg = rates(
        Protocol::P2,
        AdversarySpec::Tp(AnnouncePolicy::Constant(BellOutcome::PhiPlus)),
        100,
    );
    assert_eq!(agg.abort_rate, 1.0);
    for o in [
        BellOutcome::PhiMinus,
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
    ] {
        assert_eq!(
            rates(
                Protocol::P1,
                AdversarySpec::Tp(AnnouncePolicy::Constant(o)),
                100
            )
            .abort_rate,
            1.0
        );
    }
}

#[test]
fn every_intercept_policy_disturbs() {
    for p in Protocol::ALL {
        for policy in [
            BasisPolicy::Z,
            BasisPolicy::X,
            BasisPolicy::Random,
            BasisPolicy::Breidbart,
            BasisPolicy::Angle(0.3),
        ] {
            let agg = rates(p, AdversarySpec::Intercept(policy), 40);
            assert!(
                agg.decode_error_rate > 0.2,
                "{p} {policy}: {}",
                agg.decode_error_rate
            );
            assert_eq!(agg.abort_rate, 1.0);
        }
    }
}

#[test]
fn probes_on_live_runs() {
    for p in Protocol::ALL {
        let quiet = rates(p, AdversarySpec::ProbeConstrained { dim: 4 }, 100);
        assert_eq!(quiet.success_rate, 1.0, "{p}");
        assert_eq!(quiet.key_agreement_rate, Some(1.0));
        let loud = rates(p, AdversarySpec::ProbeCopy, 100);
        assert_eq!(loud.abort_rate, 1.0, "{p}");
    }
}
