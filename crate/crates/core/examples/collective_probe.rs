//! Entangling probes: a condition-satisfying probe learns nothing, a probe
//! that copies the key basis is caught.

use laqkd::adversary::{
    check_probe_conditions, construct_constrained_probe, probe_leakage_unchecked, ProbeInstance,
};
use laqkd::Protocol;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for protocol in Protocol::ALL {
        let probes = [
            (
                "constrained",
                construct_constrained_probe(protocol, &mut rng),
            ),
            (
                "random",
                ProbeInstance::random_unconstrained(protocol, 4, &mut rng).expect("dim"),
            ),
            ("copy", ProbeInstance::copy_probe(protocol)),
        ];
        for (name, probe) in probes {
            let cond = check_probe_conditions(&probe);
            let leak = probe_leakage_unchecked(&probe, 100_000, &mut rng).expect("trials");
            println!(
                "{protocol} {name:<11} d={} residual {:.2e} detect {:.4} MI {:.5} (exact {:.2e}) TD {:.2e}",
                probe.probe_dim(),
                cond.residual,
                leak.detection_probability,
                leak.mi_estimate,
                leak.mi_exact,
                leak.max_trace_distance
            );
        }
    }
}
