//! One honest run of each protocol, printed as a transcript summary.

use laqkd::adversary::Passive;
use laqkd::keymat::MasterKeyStore;
use laqkd::protocols::{self, ProtocolConfig, RunOutcome};
use laqkd::Protocol;

fn main() {
    for protocol in Protocol::ALL {
        let config = ProtocolConfig::new(protocol, 32, 16, 16, 42).expect("valid lengths");
        let mut rng = config.rng();
        let mut store = MasterKeyStore::generate(protocol, 32, 16, 64, &mut rng);
        let transcript = protocols::run(&config, &mut store, &mut Passive, &mut rng).expect("run");

        println!(
            "== {protocol}: {} positions, {} messages",
            transcript.positions.len(),
            transcript.messages.len()
        );
        for m in &transcript.messages {
            println!(
                "  round {} {:?} {:?} -> {:?}",
                m.round, m.kind, m.from, m.to
            );
        }
        match &transcript.outcome {
            RunOutcome::Success { alice_key, bob_key } => {
                println!("  alice {}", alice_key.bits.to_hex());
                println!("  bob   {}", bob_key.bits.to_hex());
            }
            RunOutcome::Abort { reason } => println!("  aborted: {reason:?}"),
        }
    }
}
