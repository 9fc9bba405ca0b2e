//! Master keys shared across runs: aborts eat into the backup until it runs out.

use laqkd::adversary::{AnnouncePolicy, AttackStrategy, Eavesdropper, Passive};
use laqkd::keymat::{
    read_key_file, write_key_file, KeyEncoding, KeyFileHeader, KeyId, MasterKeyStore,
};
use laqkd::metrics::abort_discard;
use laqkd::protocols::{self, ProtocolConfig};
use laqkd::Protocol;

fn main() {
    let (n, m, l) = (64, 32, 150);
    let config = ProtocolConfig::new(Protocol::P2, n, m, n / 2, 3).expect("valid lengths");
    let mut rng = config.rng();
    let store = MasterKeyStore::generate(Protocol::P2, n, m, l, &mut rng);

    let header = KeyFileHeader {
        protocol: Protocol::P2,
        n,
        m,
        l,
        encoding: KeyEncoding::Hex,
    };
    let mut file = Vec::new();
    write_key_file(&store, &header, &mut file).expect("write");
    println!(
        "{}",
        String::from_utf8_lossy(&file)
            .lines()
            .next()
            .unwrap_or_default()
    );
    let (_, mut store) = read_key_file(file.as_slice()).expect("read");

    println!("discard per abort: {:?}", abort_discard(Protocol::P2, n, m));
    let honest = protocols::run(&config, &mut store, &mut Passive, &mut rng).expect("run");
    println!(
        "honest run: success={} backup K1={} K2={}",
        honest.outcome.is_success(),
        store.backup_remaining(KeyId::K1).unwrap(),
        store.backup_remaining(KeyId::K2).unwrap()
    );

    let mut tp = Eavesdropper::new(AttackStrategy::MaliciousTp {
        announce_policy: AnnouncePolicy::UniformRandom,
    });
    for round in 1.. {
        match protocols::run(&config, &mut store, &mut tp, &mut rng) {
            Ok(t) => println!(
                "attacked run {round}: abort={} backup K1={} K2={}",
                !t.outcome.is_success(),
                store.backup_remaining(KeyId::K1).unwrap(),
                store.backup_remaining(KeyId::K2).unwrap()
            ),
            Err(e) => {
                println!("attacked run {round}: {e}");
                break;
            }
        }
    }
}
