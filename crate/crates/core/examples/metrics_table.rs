//! Comparison table at the default lengths, then as JSON for one protocol.

use laqkd::metrics::{metrics_report, render_table, Coefficients};
use laqkd::Protocol;

fn main() {
    let reports: Vec<_> = Protocol::ALL
        .iter()
        .map(|&p| metrics_report(p, 128, 64, 256, Coefficients::Printed).expect("lengths"))
        .collect();
    print!("{}", render_table(&reports, true));

    let exact = metrics_report(Protocol::P3, 128, 64, 256, Coefficients::Exact).expect("lengths");
    println!("{}", serde_json::to_string_pretty(&exact).expect("json"));
}
