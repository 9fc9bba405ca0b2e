//! Transmission time cost of the bundled schedules and of multi-party layouts.

use laqkd::metrics::{
    all_to_all_schedule, bundled_schedule, relay_schedule, ttc, TransmissionSchedule,
};
use laqkd::Protocol;

fn main() {
    for p in Protocol::ALL {
        let b = bundled_schedule(p).ttc_breakdown().expect("acyclic");
        println!(
            "{p}: TTC {} = q {} + b {} - shared {}",
            b.ttc, b.quantum_waves, b.classical_waves, b.shared_waves
        );
    }
    for parties in [3, 5, 8] {
        println!(
            "{parties} parties: all-to-all TTC {}, relay TTC {}",
            ttc(&all_to_all_schedule(parties)).expect("acyclic"),
            ttc(&relay_schedule(parties)).expect("acyclic")
        );
    }

    let json = r#"[
        {"id": "send", "kind": "quantum", "from": "alice", "to": "bob"},
        {"id": "ack", "kind": "classical", "from": "bob", "to": "alice", "deps": ["send"]},
        {"id": "check", "kind": "classical", "from": "alice", "to": "bob", "deps": ["ack"]}
    ]"#;
    let schedule: TransmissionSchedule = serde_json::from_str(json).expect("schedule");
    println!("custom schedule: {:?}", schedule.ttc_breakdown());
}
