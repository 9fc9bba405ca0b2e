//! CSV of abort rates and costs over a small parameter grid.

use laqkd::cli::{cmd_sweep, AdversarySpec, ScenarioConfig, SweepGrid};
use laqkd::Protocol;

fn main() {
    let config = ScenarioConfig::new(Protocol::P1, 64, 16, 200, 5).with_adversary(
        AdversarySpec::Intercept(laqkd::adversary::BasisPolicy::Random),
    );
    let grid = SweepGrid {
        protocols: Protocol::ALL.to_vec(),
        n: vec![16, 64],
        m: vec![1, 2, 4],
    };
    cmd_sweep(&config, &grid, &mut std::io::stdout()).expect("sweep");
}
